from .gross_pitaevskii import (
    GpeComplexModel,
    GpeRealModel,
    gpe_assemble,
    gpe_matrices,
    harmonic_potential,
    to_complex,
    to_real,
)
from .kohn_sham import Ks3dModel, KsSimpleModel, charge_density
from .rlda import (
    Dataset,
    DatasetError,
    RldaModel,
    clda_direction,
    gaussian_blobs,
    load_dataset,
    rlda_newton_config,
    rlda_pipeline,
)
