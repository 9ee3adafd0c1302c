import os, \
    sys
