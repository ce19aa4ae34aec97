"""
evoloss - evolving a parametric classification loss on generated tasks
"""
__version__ = "1.0.0"

# Bumped whenever an on-disk artifact layout changes
ARTIFACT_VERSION = 1
