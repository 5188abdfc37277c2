"""PU learning under the selected-at-random labeling assumption."""

__version__ = "0.1.0"
