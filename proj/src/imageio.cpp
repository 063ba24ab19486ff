#include "tiseg/imageio.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>

namespace tiseg {

namespace fs = std::filesystem;

RgbImage load_rgb(const fs::path& path) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
    if (raw.empty()) throw std::runtime_error("cannot read image " + path.string());
    double max_value = 255.0;
    if (raw.depth() == CV_16U) max_value = 65535.0;
    else if (raw.depth() != CV_8U) throw std::runtime_error(path.string() + ": unsupported bit depth");
    cv::Mat rgb;
    switch (raw.channels()) {
        case 1: cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB); break;
        case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
        case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
        default: throw std::runtime_error(path.string() + ": unsupported channel count");
    }
    cv::Mat f;
    rgb.convertTo(f, CV_64FC3, 1.0 / max_value);
    RgbImage out;
    out.height = f.rows;
    out.width = f.cols;
    out.pixels.resize(static_cast<size_t>(f.rows) * f.cols * 3);
    for (int y = 0; y < f.rows; ++y) {
        const auto* row = f.ptr<double>(y);
        std::copy(row, row + f.cols * 3, out.pixels.begin() + static_cast<ptrdiff_t>(y) * f.cols * 3);
    }
    return out;
}

void save_rgb_png(const fs::path& path, int height, int width, const std::vector<double>& pixels) {
    if (pixels.size() != static_cast<size_t>(height) * width * 3) throw std::invalid_argument("save_rgb_png: size mismatch");
    cv::Mat m(height, width, CV_8UC3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
                // BGR order on disk.
                m.at<cv::Vec3b>(y, x)[2 - c] = cv::saturate_cast<uint8_t>(v * 255.0 + 0.5);
            }
    if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write " + path.string());
}

void save_mask_png(const fs::path& path, int height, int width, const std::vector<uint8_t>& mask) {
    if (mask.size() != static_cast<size_t>(height) * width) throw std::invalid_argument("save_mask_png: size mismatch");
    cv::Mat m(height, width, CV_8UC1);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) m.at<uint8_t>(y, x) = mask[static_cast<size_t>(y) * width + x] ? 255 : 0;
    if (!cv::imwrite(path.string(), m, {cv::IMWRITE_PNG_BILEVEL, 1}))
        throw std::runtime_error("cannot write " + path.string());
}

std::vector<uint8_t> load_mask_png(const fs::path& path, int* height, int* width) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw std::runtime_error("cannot read mask " + path.string());
    std::vector<uint8_t> out(static_cast<size_t>(m.rows) * m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) out[static_cast<size_t>(y) * m.cols + x] = m.at<uint8_t>(y, x) ? 1 : 0;
    if (height) *height = m.rows;
    if (width) *width = m.cols;
    return out;
}

void save_overlay_png(const fs::path& path, int height, int width, const std::vector<double>& pixels,
                      const std::vector<uint8_t>& gt, const std::vector<uint8_t>& pred) {
    cv::Mat img(height, width, CV_8UC3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at<cv::Vec3b>(y, x)[2 - c] =
                    cv::saturate_cast<uint8_t>(pixels[(static_cast<size_t>(y) * width + x) * 3 + c] * 255.0 + 0.5);
    auto contours_of = [&](const std::vector<uint8_t>& m) {
        cv::Mat bin(height, width, CV_8UC1);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) bin.at<uint8_t>(y, x) = m[static_cast<size_t>(y) * width + x] ? 255 : 0;
        std::vector<std::vector<cv::Point>> contours;
        cv::findContours(bin, contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_NONE);
        return contours;
    };
    cv::drawContours(img, contours_of(gt), -1, cv::Scalar(0, 200, 0), 1);
    cv::drawContours(img, contours_of(pred), -1, cv::Scalar(0, 0, 230), 1);
    if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace tiseg
