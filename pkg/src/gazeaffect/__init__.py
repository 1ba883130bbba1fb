"""Eye-tracking and personality based emotion recognition.

Raw gaze recordings go through quality filtering, event detection and
face-region labelling, are resampled into fixed-length sequences, and feed
a recurrent fusion network trained per target label.
"""

__version__ = "0.1.0"

EMOTIONS = ("Anger", "Disgust", "Fear", "Happy", "Neutral", "Sad")
TARGETS = ("perceived_valence", "perceived_arousal", "felt_valence", "felt_arousal")
