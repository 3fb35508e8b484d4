# Configuration package: environment settings, logging setup and run configuration files
