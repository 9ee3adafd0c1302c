# import fake
import real
