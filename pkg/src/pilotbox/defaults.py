"""Central defaults shared by the experiments and the command line.

=================  ==========  =====================================
name               value       used for
=================  ==========  =====================================
BASIS_SIZE         64          truncation of projected states
WALKERS            10_000      Monte-Carlo ensemble size
SEED               42          root RNG seed
ALPHA              0.05        detection test level
READ_TIME          pi/3        delay before the receiving-side readout
REL_TOL / ABS_TOL  1e-6/1e-9   trajectory integration tolerances
MAX_STEP           0.1         integrator step cap
NODE_FLOOR         1e-10       density below which steps are clamped
=================  ==========  =====================================
"""

import math

BASIS_SIZE = 64
WALKERS = 10_000
SEED = 42
ALPHA = 0.05
READ_TIME = math.pi / 3.0
REL_TOL = 1e-6
ABS_TOL = 1e-9
MAX_STEP = 0.1
NODE_FLOOR = 1e-10
