from pkg import (  # comment
    a,  # another
    b,
)
