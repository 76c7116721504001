"""P1 finite element assembly and sparse SPD solvers."""
