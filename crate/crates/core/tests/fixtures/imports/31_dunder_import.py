x = __import__("os")
