x.import_thing()
importlib = 1
