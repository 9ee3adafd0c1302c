s = "# not comment"
import ok
