"""Football match annotation quality pipeline.

Two halves: sensor-based activity recognition (windowed statistical and
spectral features into a random forest) and annotation error detection
(association rules mined from annotation corpora, applied as consistency
checks with human review of the resulting warnings).
"""

__version__ = "0.1.0"
