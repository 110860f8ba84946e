"""EV charging levels and voltage quality in radial feeders via an exact SOCP relaxation of AC OPF."""
