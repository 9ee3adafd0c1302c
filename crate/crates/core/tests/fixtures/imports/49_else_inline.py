if a:
    pass
else: from fallback import impl
