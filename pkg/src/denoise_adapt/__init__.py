"""Text-only domain adaptation toolkit built around text denoising.

The package turns target-domain transcripts into synthetic denoising
training pairs, mixes them with source-domain views inside each batch,
and ships a small self-contained trainer plus WER tooling to measure
adaptation gains and forgetting.
"""

__version__ = "0.1.0"
