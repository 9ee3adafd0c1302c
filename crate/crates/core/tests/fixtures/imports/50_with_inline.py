with open(f) as h: import z
