# Radiance field
from src.field.encoding import SceneBounds, encode_position, encoded_width
from src.field.mlp import LATENT_CODES, FieldMLP

__all__ = ["LATENT_CODES", "FieldMLP", "SceneBounds", "encode_position", "encoded_width"]
