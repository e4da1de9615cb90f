"""Configuration-driven experiment runner and command line interface."""
