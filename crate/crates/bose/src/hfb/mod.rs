//! Improved-Bogoliubov (squeezed-state) variational problem: the energy
//! functional and its coefficients, fixed-point solvers in a finite box and
//! in the thermodynamic limit, rigorous energy bounds, and the speed of
//! sound.

pub mod box_solver;
pub mod state;

pub use box_solver::{
    solve_finite_box, solve_finite_box_multistart, BoxOptions, BoxParam, BoxSolve,
    MultiStartReport,
};
pub use state::{
    chemical_potential_of_state, coefficients_d_o, coefficients_f_g, condensate_residual,
    density_of_state, energy_b, energy_of_state, gradients_b, raw_coefficients, raw_d_o,
    stationarity_report, CoeffForm, DandO, GradB, HfbState, ModeTable, RawSqueeze,
    StationarityReport, ZeroModePolicy,
};
