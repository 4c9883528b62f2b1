"""cipdev: a desk-scale simulation of an RFID patient identification device.

The package bundles the CIP card codec, the simulated reader/tag link, the
vitals alarming pipeline, the four-agent device runtime, the HL7/MLLP
gateway, the SIMOPAC central-server stub, and the device web API.
"""

__version__ = "0.1.0"
