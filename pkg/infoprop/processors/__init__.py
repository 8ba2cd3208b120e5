"""Post-processing of simulation outputs: sensors, travel times, goodness of fit."""
