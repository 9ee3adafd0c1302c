#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Tool."""
from __future__ import print_function
import os, sys as system
from .sub import thing
'''
import ghost
'''
def run():
    import json; import csv
    return "from nowhere import x"
