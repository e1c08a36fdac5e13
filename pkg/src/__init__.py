# src/__init__.py
# Weaving-zone vehicle matching and lane-flow estimation
# Run the cli with: python -m src.main <match|eval|synth|reid-eval>
