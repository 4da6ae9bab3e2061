"""EEG attention-score regression from stacked Gramian Angular Difference Field images."""

__version__ = "0.1.0"
