"""paddyspec: multispectral rice disease diagnosis pipeline.

Registers wide-FOV RGB photos onto narrow-FOV R-G-NIR frames, calibrates
digital numbers to reflectance, synthesizes an NDVI channel, fuses it with
RGB, and trains a from-scratch ResNet18 over three leaf classes.
"""

__version__ = "0.1.0"
