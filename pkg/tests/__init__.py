# Tests package for mesh-energy-sim
