"""
gCCE against exact evolution
============================

Nine nuclear spins are few enough to diagonalise the full Hamiltonian
(3 x 2^9 = 1536 states), so the cluster expansion can be checked directly.
"""
import numpy as np

from gcce import (CentralSpin, Experiment, LevelSelection, exact_coherence, exhaustive_bath_states,
                  generate_bath, make_system, ramsey, simulate, weak_bath)
from gcce.constants import ISOTOPES

natural = {k: ISOTOPES[k].abundance for k in ('29Si', '13C')}

# basal divacancy at zero field; keep the nine weakly coupled spins nearest the defect
central = CentralSpin(1.0, D=1334.0, E=18.4)
bath = weak_bath(make_system(central, generate_bath('4H-SiC:kh', natural, 1.2, seed=0), 0.0))
nearest = np.argsort(np.linalg.norm(bath.positions, axis=1), kind='stable')[:9]
system = bath.with_bath([bath.bath[i] for i in sorted(nearest)])
print(f'{len(system.bath)} bath spins')

t = np.linspace(0, 50, 251)
# |+> and |0>: the clock transition of the basal divacancy
exp = Experiment(t, ramsey(), LevelSelection.index(2, 0), order=2, n_states=200, seed=7)
approx = simulate(system, exp)
exact = exact_coherence(system, approx.meta['levels'], ramsey(), t, exhaustive_bath_states(system))

err = np.abs(np.abs(approx.L) - np.abs(exact.L))
print(f'max | |L_gCCE| - |L_exact| | = {err.max():.4f}')
for k in range(0, len(t), 25):
    print(f'  t = {t[k]:5.1f} us   gCCE {abs(approx.L[k]):.4f}   exact {abs(exact.L[k]):.4f}')
