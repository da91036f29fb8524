"""mapfuse: LiDAR/GNSS/IMU fusion into globally consistent 3D city maps.

Library layers, bottom up: geometry (geom), point-cloud conditioning
(cloud), state estimation (ekf, signals), temporal alignment (velocity,
dtw), registration and mapping (registration, ndt, descriptor, posegraph,
calibrate, features, mappipe), map scoring (raster, skeleton, metrics),
synthetic data (world, scenario), and the file/CLI surface (fileio,
config, pipeline, cli).
"""

__version__ = "0.1.0"
