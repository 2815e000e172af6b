"""Assistive floorplan modeling from point-cloud density images.

Candidate walls are enumerated from corner pairs, a contrastively trained
transformer ranks the natural next wall to add, and a TCN-based Fréchet
metric scores how natural a produced ordering is. An HTTP service exposes
the accept/reject assistive loop to interactive clients.
"""

__version__ = "0.1.0"
