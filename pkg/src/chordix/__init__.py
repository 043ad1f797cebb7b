"""Transfer integrals between bodies via distance, radii and chord distributions."""

from .errors import *  # noqa: F401,F403
from .geometry import (AxisBox, Body, ConstantDensity, Csg, IntervalList, Measures,
                       RadialLinearDensity, Sphere, contains, interval_bool, line_intervals,
                       measures, ray_intervals, sample_point)
from .kernels import Kernel, builtin_kernels, parse_kernel
from .scene import Scene, build_scene, decompose_overlaps, load_scene, parse_scene
from .signed_hist import (MatrixDensity, SignedHistogram, integral, linear_combine,
                          matrix_sum, moment, to_csv)
from .estimators import (EventBalance, estimate_chords, estimate_eta, estimate_eta_weighted,
                         estimate_radii, gamma_from_eta, lambda_from_mu, mutual_projection_area)
from .streams import RandomStream
from .transfer import (TransferResult, transfer_direct, transfer_nonuniform, transfer_via_chords,
                       transfer_via_eta, transfer_via_gamma, transfer_via_lambda,
                       transfer_via_radii)
from .verify import Budgets, VerificationReport, verify_identities, verify_oracles

__version__ = "0.1.0"
