"""
SkillLab

Factorized bimanual skill policies with a gated inter-arm channel, the entangled
baselines they are compared against, a planar dual-arm simulator and the
evaluation harness around them.
"""

__version__ = '0.1.0'
