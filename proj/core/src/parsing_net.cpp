#include "wildgs/parsing_net.hpp"

#include "wildgs/errors.hpp"
#include "wildgs/ops.hpp"

namespace wildgs {

ParsingNet::ParsingNet(std::mt19937_64& rng)
    : enc0_(3, 8, 3, 1, rng),
      down1_(8, 16, 3, 2, rng),
      down2_(16, 24, 3, 2, rng),
      down3_(24, 32, 3, 2, rng),
      up2_(32 + 24, 24, 3, 1, rng),
      up1_(24 + 16, 16, 3, 1, rng),
      up0_(16 + 8, 8, 3, 1, rng),
      head_(8, 1, 1, 1, rng, 0.5) {}

ParsingOutput ParsingNet::forward(ad::Tape& tape, const ad::Tensor& image) const {
  if (image.rank() != 4 || image.size(0) != 1 || image.size(1) != 3) {
    throw ContractViolation("parsing net expects a 1 x 3 x H x W image");
  }
  if (image.size(2) % 8 != 0 || image.size(3) % 8 != 0) {
    throw ContractViolation("parsing net needs H and W divisible by 8, got " + ad::shape_str(image.shape()));
  }
  const ad::Tensor e0 = ad::relu(tape, enc0_(tape, image));
  const ad::Tensor e1 = ad::relu(tape, down1_(tape, e0));
  const ad::Tensor e2 = ad::relu(tape, down2_(tape, e1));
  const ad::Tensor e3 = ad::relu(tape, down3_(tape, e2));
  const ad::Tensor d2 = ad::relu(tape, up2_(tape, ad::concat_channels(tape, ad::upsample2x(tape, e3), e2)));
  const ad::Tensor d1 = ad::relu(tape, up1_(tape, ad::concat_channels(tape, ad::upsample2x(tape, d2), e1)));
  const ad::Tensor d0 = ad::relu(tape, up0_(tape, ad::concat_channels(tape, ad::upsample2x(tape, d1), e0)));
  return {ad::sigmoid(tape, head_(tape, d0)), e3};
}

void ParsingNet::collect(const std::string& prefix, nn::ParamList& out) const {
  enc0_.collect(prefix + "enc0.", out);
  down1_.collect(prefix + "down1.", out);
  down2_.collect(prefix + "down2.", out);
  down3_.collect(prefix + "down3.", out);
  up2_.collect(prefix + "up2.", out);
  up1_.collect(prefix + "up1.", out);
  up0_.collect(prefix + "up0.", out);
  head_.collect(prefix + "head.", out);
}

ad::Tensor predict_mask(ad::Tape& tape, const ad::Tensor& image, const ParsingNet& net) {
  return net.forward(tape, image).mask;
}

}  // namespace wildgs
