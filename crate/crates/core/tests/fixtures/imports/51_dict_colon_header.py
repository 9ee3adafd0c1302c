if d == {1: 2}: import q
