// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "specthink/backend.hpp"
#include "specthink/controller.hpp"
#include "specthink/flops.hpp"
#include "specthink/harness.hpp"
#include "specthink/http_backend.hpp"
#include "specthink/metrics.hpp"
#include "specthink/scripted_backend.hpp"
#include "specthink/sentence_classifier.hpp"
#include "specthink/text_segmentation.hpp"
#include "specthink/tokenizer.hpp"
#include "specthink/trace.hpp"
