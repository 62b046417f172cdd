"""Embedding adapter: proposal texts to EMB1 files, with annual adaptation."""

from .adapt import AdaptationConfig, YearResult, further_pretrain
from .corpus_io import Proposal, new_proposals_through, read_proposals
from .emb_format import write_emb1
from .encoder import Encoder, EncoderConfig
from .pipeline import embed_components
from .toy_model import init_base_model

__version__ = "0.1.0"
