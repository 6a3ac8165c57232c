"""Forward inference, complexity accounting and tooling for a prompted
pixel-space low-light enhancement network, in numpy with numba kernels."""
from .errors import ConfigError, FormatError, LengthError, PixieError, ShapeError, UnsupportedError
from .kernels import BACKEND
from .pipeline import (
    PipelineConfig,
    count_flops,
    count_params,
    init_weights,
    pipeline_forward,
)
from .prompt import PromptSet, SyntheticPromptConfig, load_prompts, save_prompts, synth_prompts
from .weights import WeightStore, load_weights, save_weights

__version__ = "0.1.0"
