"""Transformer-based sentiment scorer for sentilag post files.

The adapter reads the primary pipeline's posts JSONL, scores each post with
a pretrained (optionally fine-tuned) sequence-classification model, and
writes the shared label-file contract: one JSON object per post with keys
``post_id``, ``label``, ``probability``. It communicates with the primary
package exclusively through these files.
"""

from .scoring import AdapterConfig, AdapterError, score_file

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "AdapterError", "score_file", "__version__"]
