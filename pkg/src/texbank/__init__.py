"""texbank: texture representations, from filter banks to Fisher vectors.

The pipeline is descriptor extraction (corpus, filterbank, descriptors),
vocabulary learning (vocab), orderless pooling (encoders), kernel
classification with calibration (learn), evaluation (metrics), greedy
region-pasting segmentation (segment), and annotation budgeting (annosim).
The cli module drives everything in batch.
"""

from .corpus import (
    DatasetManifest,
    GrayImage,
    ManifestEntry,
    ScalePyramid,
    build_pyramid,
    load_image,
    load_manifest,
    parse_manifest,
    save_image,
)
from .descriptors import (
    DescriptorField,
    DescriptorSample,
    extract_dsift,
    extract_lbp,
    extract_patches,
    load_descriptor_field,
    multiscale_collect,
    save_descriptor_field,
    subsample_field,
)
from .encoders import (
    EncodedVector,
    PostProcessSpec,
    encode_bovw,
    encode_fv,
    encode_kcb,
    encode_llc,
    encode_vlad,
    load_encoded_vector,
    postprocess,
    region_pool,
    save_encoded_vector,
    spp_encode,
)
from .errors import EmptyRegionError, EmptySampleError, FormatError, TexbankError
from .filterbank import (
    FilterBank,
    FilterResponseField,
    apply_bank,
    make_lm,
    make_mr_bank,
    mr8_collapse,
    mr8_extractor,
)
from .learn import (
    CalibrationParams,
    KernelModel,
    KernelSpec,
    LinearClassifier,
    compute_kernel,
    estimate_chi2_lambda,
    normalize_kernel,
    platt_calibrate,
    recalibrate,
    train_kernel_svm_ova,
    train_linear_svm_ova,
)
from .metrics import (
    MultiLabelPixelMap,
    PixelLabelMap,
    PredictionSet,
    average_precision,
    mutual_information_reduction,
    osa_pixel_accuracy,
    per_class_accuracy,
    pixel_accuracy,
)
from .modelio import load_models, save_models
from .segment import (
    RegionProposal,
    SegmentationResult,
    greedy_paste,
    parse_rle_proposals,
    read_pgm,
    score_proposals,
    write_pgm,
)
from .annosim import (
    BudgetReport,
    CooccurrenceModel,
    GroundTruthMatrix,
    annotation_cost,
    estimate_cooccurrence,
    rank_queries_posterior,
    rank_queries_prior,
    simulate_budget,
)
from .vocab import (
    Codebook,
    GmmModel,
    PcaWhitener,
    fit_gmm,
    fit_pca_whitener,
    gmm_posteriors,
    kmeans,
)

__version__ = "0.1.0"
