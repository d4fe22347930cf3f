"""
Coherence of a central electron spin coupled to a nuclear spin bath.

Both the conventional cluster-correlation expansion (CCE) and the generalized
expansion (gCCE), in which every cluster carries the central spin explicitly,
are available. Spins outside a cluster act through a mean field, and pure bath
states are sampled by Monte Carlo. Units: MHz, mT, us, nm.
"""
from .cce import (ClusterSet, CoherenceCurve, Experiment, PureBathState, conventional_cce,
                  enumerate_clusters, exhaustive_bath_states, run_gcce, sample_bath_states, simulate)
from .constants import ELECTRON_GYRO, ISOTOPES
from .errors import (BranchResolutionError, ConfigError, DegeneracyError, FitRangeError, GCCEError,
                     NumericalError, ParseError, SingularityError, UnsupportedOrderError, ValidationError)
from .exact import exact_coherence
from .hamiltonian import (LevelSelection, QubitLevels, build_cluster_hamiltonian, build_electron_hamiltonian,
                          select_qubit_levels)
from .propagation import PulseSequence, cpmg, hahn_echo, ramsey, xy4
from .spin_model import (BathSpin, CentralSpin, SpinSystem, generate_bath, load_bath, make_system, sic_4h,
                         weak_bath, write_bath_file)

__all__ = ['ClusterSet', 'CoherenceCurve', 'Experiment', 'PureBathState', 'conventional_cce', 'enumerate_clusters',
           'exhaustive_bath_states', 'run_gcce', 'sample_bath_states', 'simulate', 'ELECTRON_GYRO', 'ISOTOPES',
           'BranchResolutionError', 'ConfigError', 'DegeneracyError', 'FitRangeError', 'GCCEError',
           'NumericalError', 'ParseError', 'SingularityError', 'UnsupportedOrderError', 'ValidationError',
           'exact_coherence', 'LevelSelection', 'QubitLevels', 'build_cluster_hamiltonian',
           'build_electron_hamiltonian', 'select_qubit_levels', 'PulseSequence', 'cpmg', 'hahn_echo', 'ramsey',
           'xy4', 'BathSpin', 'CentralSpin', 'SpinSystem', 'generate_bath', 'load_bath', 'make_system', 'sic_4h',
           'weak_bath', 'write_bath_file']
