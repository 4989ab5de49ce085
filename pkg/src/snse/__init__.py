"""Pseudo-spectral simulator for rotating stochastic Navier-Stokes flow on
the unit sphere, driven by a subordinated stable noise, with the solution
split u = v + z into a stochastic convolution z and a shifted deterministic
part v."""

__version__ = "0.1.0"
