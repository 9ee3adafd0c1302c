import
from x import
import y
