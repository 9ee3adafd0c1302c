from collections import OrderedDict
