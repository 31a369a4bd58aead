"""Bridge from causal-LM checkpoints to the logprob file format."""

from .errors import DatasetRecordError, ExportError, TokenizerMismatchError
from .export import ExportJob, ExportStats, export_logprobs, read_dataset
from .scoring import batched_response_logprobs, encode_pair_text, load_model, load_tokenizer_pair

__version__ = "0.1.0"
