from ... import pkg
