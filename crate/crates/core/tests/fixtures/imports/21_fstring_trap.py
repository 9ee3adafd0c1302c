x = f"import {y}"
import z
