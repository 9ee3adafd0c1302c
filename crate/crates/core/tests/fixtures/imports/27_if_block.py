if True:
    from x.y import z
