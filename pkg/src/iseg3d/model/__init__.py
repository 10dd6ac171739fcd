from .network import (
    EncodedImage,
    EpisodeCache,
    ModelConfig,
    NetworkOutput,
    PromptableSegmenter,
    build_model,
    load_checkpoint,
    save_checkpoint,
    select_best,
)

__all__ = [
    "EncodedImage",
    "EpisodeCache",
    "ModelConfig",
    "NetworkOutput",
    "PromptableSegmenter",
    "build_model",
    "load_checkpoint",
    "save_checkpoint",
    "select_best",
]
