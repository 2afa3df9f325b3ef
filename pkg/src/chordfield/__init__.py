"""chordfield: an agent ecology on a psychoacoustic consonance landscape."""

__version__ = "0.1.0"
