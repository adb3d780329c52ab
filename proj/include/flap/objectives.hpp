#pragma once

#include "flap/masking.hpp"
#include "flap/tape.hpp"
#include "flap/tensor.hpp"

namespace flap::objectives {

struct LossReport {
  double contrastive = 0.0;
  double reconstruction = 0.0;
  double total = 0.0;
  double tau = 0.0;
  double lambda_recon = 0.0;
  bool reconstruction_active = false;
};

// Batch InfoNCE over unit-normalized embedding rows: row-wise cross-entropy
// of the similarity matrix against its diagonal, scaled by 1/tau. With
// symmetric set (the default) the text-anchored direction is averaged in;
// symmetric=false is the literal audio-anchored form.
//
// Rows whose norm deviates from 1 by more than 1e-6 violate the contract and
// raise; tau must be positive.
Tensor info_nce(Tape& tape, const Tensor& audio, const Tensor& text,
                const Tensor& log_tau, bool symmetric = true);
Tensor info_nce(Tape& tape, const Tensor& audio, const Tensor& text,
                double tau, bool symmetric = true);

struct ReconstructionLoss {
  Tensor loss;        // scalar; exactly 0 when inactive
  size_t masked_patches = 0;
  bool active = false;  // false for a keep-all plan
};

// Mean over the masked patches of the per-patch mean squared element error.
// Visible patches contribute nothing.
ReconstructionLoss reconstruction_mse(Tape& tape, const Tensor& reconstructed,
                                      const Tensor& target_patches,
                                      const masking::MaskPlan& plan);

struct CombinedLoss {
  Tensor total;
  LossReport report;
};

CombinedLoss combined_loss(Tape& tape, const Tensor& audio, const Tensor& text,
                           const Tensor& log_tau,
                           const ReconstructionLoss& recon, double lambda_recon,
                           bool symmetric = true);

}  // namespace flap::objectives
