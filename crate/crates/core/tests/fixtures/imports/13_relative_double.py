from ..core.base import X
