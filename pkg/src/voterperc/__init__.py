"""Spread-out voter model toolkit.

Exact finite-window sampling of the stationary laws of the range-R voter
model on Z^d (d >= 3) through coalescing-random-walk duality, plus the
estimators built on top of it: pair meeting probabilities, merge-moment and
translate-product inequalities, multiscale tree placements with sparsity
audits, cluster/crossing analysis of sampled fields, and finite-size
crossing thresholds compared with the iid Bernoulli reference.

Modules
-------
lattice      integer-point geometry: balls, boxes, jump offsets
mc           estimates with confidence intervals, seeding, batching
walks        continuous-time rate-1 walks, pair meeting probabilities
coalescence  coalescing-walk engine with marked (parity) partitions
measure      window sampling of the stationary and finite-time laws
percolation  cluster labeling, crossing events, large-cluster detection
renorm       scale ladder, tree placements, sparsity and pair-sum audits
bounds       inequality battery (merge moments, disjoint translates)
threshold    coupled-replicate crossing curves and threshold trends
cli          command-line front end (`voterperc`)
"""

from . import (bounds, coalescence, io, lattice, mc, measure, percolation,
               renorm, threshold, walks)
from .coalescence import (CoalescenceRun, MarkedPartition, StoppingPolicy,
                          run_coalescence)
from .lattice import BoxSpec, box_points, jump_offsets, l1_ball
from .mc import EstimateWithCI
from .measure import (CylinderEvent, FieldSample, sample_bernoulli, sample_mu,
                      sample_voter_torus)
from .percolation import (AnnulusCrossingEvent, ClusterLabeling, crossing,
                          detect_EM, label_clusters)
from .renorm import (ProperEmbedding, embed_from_path, enumerate_embeddings,
                     sample_random_embedding, validate_embedding)
from .threshold import CoupledCrossingSampler, crossing_curve, estimate_threshold
from .walks import estimate_meet_probability, meet_probability_table

__version__ = "0.1.0"

__all__ = [
    "AnnulusCrossingEvent", "BoxSpec", "ClusterLabeling", "CoalescenceRun",
    "CoupledCrossingSampler", "CylinderEvent", "EstimateWithCI", "FieldSample",
    "MarkedPartition", "ProperEmbedding", "StoppingPolicy", "bounds",
    "box_points", "cli", "coalescence", "crossing", "crossing_curve",
    "detect_EM", "embed_from_path", "enumerate_embeddings",
    "estimate_meet_probability", "estimate_threshold", "io", "jump_offsets",
    "l1_ball", "label_clusters", "lattice", "mc", "measure",
    "meet_probability_table", "percolation", "renorm", "run_coalescence",
    "sample_bernoulli", "sample_mu", "sample_random_embedding",
    "sample_voter_torus", "threshold", "validate_embedding", "walks",
]
