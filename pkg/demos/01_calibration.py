"""
Radiometric calibration against a water bath
============================================

Factory constants of low-cost thermal cameras drift away from the truth at
both ends of the range. This walk-through simulates a heating sweep,
refits the two free constants (R1 and O) and compares the readouts.
"""

import numpy as np

from thermforge.optimize import calibrate
from thermforge.radiometry import FACTORY_PARAMS, OPTIMIZED_PARAMS, dn_of_temperature, temperature_of_dn
from thermforge.synth import make_water_bath

# A thermocouple log: integer DN readouts versus noisy reference temperatures
pairs = make_water_bath(seed=1, n=200, t_start=4.0, t_end=100.0, noise_c=0.5)
print(f"{len(pairs)} reference pairs, {pairs[0].t_ref:.1f} -> {pairs[-1].t_ref:.1f} degC")

# Fit R1 and O from the factory starting point; R2, B and F stay fixed
report = calibrate(pairs, FACTORY_PARAMS)
after = report.params_after
print(f"converged={report.converged} after {report.iterations} iterations")
print(f"R1 {FACTORY_PARAMS.r1:.1f} -> {after.r1:.1f}   O {FACTORY_PARAMS.o:.1f} -> {after.o:.1f}")
print(f"RMSE {report.rmse_before:.2f} -> {report.rmse_after:.2f} degC, "
      f"R^2 {report.r2_before:.3f} -> {report.r2_after:.3f}")

# What the factory constants report for scenes the lab constants call 5..100 degC
print("\n true   factory readout")
for t in (5.0, 15.0, 25.0, 50.0, 75.0, 100.0):
    dn = dn_of_temperature(t, OPTIMIZED_PARAMS)
    print(f"{t:5.1f}   {temperature_of_dn(dn, FACTORY_PARAMS):6.2f}")

# The optimiser trace only ever improves
values = np.array([v for _, v in report.trace])
print(f"\nobjective {values[0]:.1f} -> {values[-1]:.3f}, monotone: {bool(np.all(np.diff(values) <= 0))}")
