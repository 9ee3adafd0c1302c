p = r"\d+"
import re
