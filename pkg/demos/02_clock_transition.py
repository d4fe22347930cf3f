"""
Clock transition of a basal divacancy
=====================================

The |+> <-> |0> frequency of a spin-1 defect with transverse anisotropy E is
``D + sqrt(E^2 + (gamma B)^2)``: flat at zero field, so the qubit is
insensitive to magnetic noise there. A Ramsey field sweep recovers the curve
from the spectra of the simulated fringes.
"""
import numpy as np

from gcce import CentralSpin, Experiment, LevelSelection, generate_bath, make_system, ramsey, weak_bath
from gcce.analysis import field_sweep, fit_hyperbolae, sweep_peaks
from gcce.constants import ISOTOPES

natural = {k: ISOTOPES[k].abundance for k in ('29Si', '13C')}
central = CentralSpin(1.0, D=1334.0, E=18.4)
system = weak_bath(make_system(central, generate_bath('4H-SiC:kh', natural, 1.0, seed=5), 0.0))

# 5 ns steps resolve frequencies up to 100 MHz above the 1334 MHz rotating frame
exp = Experiment(np.linspace(0, 10, 2001), ramsey(), LevelSelection.index(2, 0), n_states=10, seed=1)
fields = np.linspace(-2, 2, 21)
sweep = field_sweep(system, exp, fields, spectrum=dict(frame_frequency=1334.0))

for b, peaks in zip(fields, sweep_peaks(sweep)):
    print(f'B = {b:+.1f} mT   strongest line {peaks[0]:7.3f} MHz above the frame')

branch = fit_hyperbolae(sweep, 1)[0]
print(f'fitted E = {branch.E:.3f} MHz, minimum at {1e3 * branch.b_min:.1f} uT, '
      f'gamma = {branch.gyro:.3f} MHz/mT')
