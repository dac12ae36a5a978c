"""Physical constants used throughout the package.

The Hamiltonian is stored as H/h in MHz with magnetic fields in mT, so the
magneton constants are kept in MHz/mT.  SI values (J/T) are used only by the
dipolar bath model.
"""

# Bohr magneton / Planck constant, MHz per mT (CODATA)
MU_B_MHZ_PER_MT = 13.9962449

# nuclear magneton / Planck constant, MHz per mT (CODATA)
MU_N_MHZ_PER_MT = 7.6225932e-3

# magnetons in SI units, J/T (CODATA)
MU_B_J_PER_T = 9.2740100783e-24
MU_N_J_PER_T = 5.0507837461e-27

# mu_0 / 4 pi, T m / (J/T) equivalently H/m / (4 pi)
MU0_OVER_4PI = 1e-7
