"""Speaker-verification toolkit built on a from-scratch numpy NN core.

Subpackages:
  nncore    tensors, autodiff, layers, gradient checking, complexity counters
  features  waveforms, log-mel filterbank features, augmentation, synthetic corpus
  frontend  multi-scale frequency-channel attention front-end
  backbone  TDNN embedding network, model variants, checkpoints
  training  margin loss, optimizer, cyclical schedule, toy trainer
  evalkit   scoring, score normalization, EER / minDCF, truncation protocol
  cli       command-line pipeline
"""

__version__ = "0.1.0"
