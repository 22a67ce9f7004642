"""Win, lose and draw probabilities of games on multi-type Galton-Watson trees."""
