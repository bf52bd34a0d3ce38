"""Two-stage social-engagement gating for service robots.

Stage I watches cheap pose signals per person and fires on a gaze-shift
preamble or a personal-zone entry. Stage II sends the short triggered clip to a
vision-language model, aggregates several analyses, and picks an action.
"""
from __future__ import annotations

__version__ = "0.1.0"
