class A:
    import inner
