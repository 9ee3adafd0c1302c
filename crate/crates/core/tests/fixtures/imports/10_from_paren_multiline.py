from typing import (
    List,
    Dict,
)
