"""Q-Bot and A-Bot networks: encoders, history attention, fusion, decoders and the image head."""
