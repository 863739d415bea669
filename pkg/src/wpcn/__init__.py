"""Wireless power transfer and WPCN scheduling under Lyapunov drift-plus-penalty."""
