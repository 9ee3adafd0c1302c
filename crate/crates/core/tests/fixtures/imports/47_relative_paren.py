from . import (a, b)
