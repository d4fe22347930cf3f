"""
Branch splitting by a strongly coupled nucleus
==============================================

A nucleus with longitudinal coupling A_iz shifts the clock-transition minimum
to B = +-A_iz / (2 gamma_e), one branch per nuclear spin projection.
"""
import logging

import numpy as np

from gcce import (BathSpin, CentralSpin, ELECTRON_GYRO, Experiment, LevelSelection, generate_bath, make_system,
                  ramsey, weak_bath)
from gcce.analysis import branch_minima, field_sweep, fit_hyperbolae
from gcce.constants import ISOTOPES

# silence the per-field notes about masked Monte-Carlo states
logging.getLogger('gcce').setLevel(logging.ERROR)

natural = {k: ISOTOPES[k].abundance for k in ('29Si', '13C')}
central = CentralSpin(1.0, D=1334.0, E=18.4)
weak = weak_bath(make_system(central, generate_bath('4H-SiC:kh', natural, 1.2, seed=7), 0.0))
strong = BathSpin('13C', [0.31, 0.07, 0.23], np.diag([-0.375, -0.375, 0.75]))
system = weak.with_bath((strong,) + weak.bath)

print('expected minima (uT):', np.round(1e3 * branch_minima([0.75], ELECTRON_GYRO), 2))

# the two branches differ by ~15 kHz near their minima, so the fringes must run for hundreds of us
exp = Experiment(np.linspace(0, 400, 801), ramsey(), LevelSelection.index(2, 0), n_states=20, seed=1)
sweep = field_sweep(system, exp, np.linspace(-0.04, 0.04, 41), spectrum=dict(frame_frequency=1352.0))
models = fit_hyperbolae(sweep, 2, gyro=ELECTRON_GYRO)
print('fitted minima (uT):  ', np.round([1e3 * m.b_min for m in models], 2))
