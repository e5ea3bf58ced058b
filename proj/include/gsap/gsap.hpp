#pragma once

#include "gsap/checkpoint.hpp"
#include "gsap/core/autograd.hpp"
#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/dataset.hpp"
#include "gsap/evidence_graph.hpp"
#include "gsap/gradcheck.hpp"
#include "gsap/graph_encoder.hpp"
#include "gsap/harness.hpp"
#include "gsap/hmpr.hpp"
#include "gsap/knowledge_store.hpp"
#include "gsap/model.hpp"
#include "gsap/oracle.hpp"
#include "gsap/structure_prompt.hpp"
#include "gsap/synthetic.hpp"
#include "gsap/tokenizer.hpp"
#include "gsap/trainer.hpp"
#include "gsap/transformer.hpp"
#include "gsap/verify.hpp"
