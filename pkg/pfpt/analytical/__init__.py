from .direct import direct_objective, mlp, logpdf
from .enumeration import (central_differences, exhaustive_max, flatten,
                          flatten_gradients, unflatten)
