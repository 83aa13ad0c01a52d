# Services layer for Prometrix backend