# Utilities module 