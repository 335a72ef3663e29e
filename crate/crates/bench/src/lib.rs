//! Benchmarks of the simulation and analysis kernels live under benches/.
