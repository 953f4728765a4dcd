# SMNAE tests
