r"""raw doc"""
import a
