"""Age-group classification from children's touch and stylus interaction logs."""

from .model import AgeGroup, TestId, assign_age_group

__version__ = "0.1.0"

__all__ = ["AgeGroup", "TestId", "assign_age_group", "__version__"]
