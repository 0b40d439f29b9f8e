"""End-to-end readout error mitigation protocol."""
