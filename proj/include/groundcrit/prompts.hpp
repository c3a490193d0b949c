#pragma once

#include <groundcrit/detection.hpp>
#include <groundcrit/error.hpp>
#include <groundcrit/parsers.hpp>

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace groundcrit {

inline constexpr std::string_view kGuidelinesPlaceholder = "{guidelines}";
inline constexpr std::string_view kExampleCountPlaceholder = "{n}";

/// Instruction templates and guidelines for one grounded-text task.
struct TaskProfile {
    std::string name;
    std::array<std::string, 6> templates; // indexed by Stage
    std::string guidelines;
    std::optional<DetectionVocabulary> vocabulary; // detection-style profiles only

    const std::string& instruction_template(Stage s) const {
        return templates[static_cast<std::size_t>(s)];
    }

    void validate() const {
        for (Stage s : kAllStages) {
            if (instruction_template(s).empty()) {
                throw InvalidArgument("TaskProfile " + name + ": missing template for " +
                                      std::string(stage_name(s)));
            }
        }
    }
};

/// Substitutes the guidelines text and example count into a template.
inline std::string render_template(std::string_view tpl, std::string_view guidelines,
                                   std::string_view example_count) {
    std::string out;
    out.reserve(tpl.size() + guidelines.size());
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const auto brace = tpl.find('{', pos);
        if (brace == std::string_view::npos) {
            out.append(tpl.substr(pos));
            break;
        }
        out.append(tpl.substr(pos, brace - pos));
        if (tpl.substr(brace, kGuidelinesPlaceholder.size()) == kGuidelinesPlaceholder) {
            out.append(guidelines);
            pos = brace + kGuidelinesPlaceholder.size();
        } else if (tpl.substr(brace, kExampleCountPlaceholder.size()) == kExampleCountPlaceholder) {
            out.append(example_count);
            pos = brace + kExampleCountPlaceholder.size();
        } else {
            throw InvalidArgument("render_template: unknown placeholder at offset " +
                                  std::to_string(brace));
        }
    }
    return out;
}

inline std::string render_instruction(const TaskProfile& profile, Stage stage, int example_count) {
    return render_template(profile.instruction_template(stage), profile.guidelines,
                           std::to_string(example_count));
}

// UI design critique. Verbatim instruction prompts with the guidelines and the
// example count lifted into placeholders.
inline TaskProfile design_critique_profile(std::string guidelines) {
    TaskProfile p;
    p.name = "design-critique";
    p.guidelines = std::move(guidelines);
    p.templates[static_cast<std::size_t>(Stage::TextGen)] =
        "For these sets of guidelines: {guidelines}. Please find all the guideline violations in "
        "the UI provided. For violation found, please provide an explanation that includes these "
        "three things: 1. the expected standard (i.e. what good design should look like), 2. the "
        "gap between the current design and the expected standard (i.e. the critique for the "
        "design), and 3. how to fix the issue in the current design. For formatting each "
        "violation, please include these three things in separate sentences. For the expected "
        "standard (#1), start the sentence with 'The expected standard is that...'. For the gap "
        "(#2), start the sentence with 'In the current design, ...', and for how to fix the "
        "design (#3), start the sentence with 'To fix this...'. Please end each violation "
        "explanation with two newline characters (\\n\\n). Please be specific in your violation "
        "explanations, making sure to refer to specific UI elements and groups in the UI. After "
        "determining all guideline violations, please also share any other design feedback you "
        "have for the UI and follow the same format of providing the expected standard, the "
        "critique for the design, and how to fix the issue. We will provide {n} examples of a UI "
        "screenshot and a set of valid design comments. Please learn how to give valid design "
        "comments from these examples and apply this knowledge to determine valid design "
        "comments for the last UI. Please be specific in your comments, referring to specific UI "
        "elements by their text label or icon, like in the examples provided. Also, please do not "
        "return any comments regarding user testing nor adherence to platform standards.";
    p.templates[static_cast<std::size_t>(Stage::TextFilter)] =
        "For the provided UI and a list corresponding design comments, please filter out the "
        "incorrect design comments and return a list tuples. Each tuple contains its index i in "
        "the list, followed by True or False. The tuple would contain True if the design comment "
        "at index i in the input list is a valid design comment, and False if the design comment "
        "at index i is an invalid comment. Please analyze the UI screenshot to determine whether "
        "or not each design comment is valid. We will give {n} examples, where each UI screenshot "
        "is followed by a list of its corresponding design comments and an output list of "
        "tuples, where each tuple contains the list index and True/False indicating the validity "
        "of the design comment at that index. Please learn from these examples, analyzing the UI "
        "screenshot to see why each comment was considered valid or invalid. Finally, we will "
        "give a UI screenshot, followed by its corresponding design comments. Please output a "
        "list of tuples consisting of the comment's list index and an indication of each "
        "comment's validity, like in the provided examples. Please output False for the design "
        "comment if it is about consistency with the brand, user testing, or adherence to "
        "platform standards. Please only output this list of tuples and nothing else.";
    p.templates[static_cast<std::size_t>(Stage::BoxGen)] =
        "You will be providing bounding boxes coordinates for the provided UI screenshot and "
        "design comment. The bounding box will enclose a relevant region in the screenshot that "
        "is discussed in the design comment. You will use the coordinate axes along the edge of "
        "the screenshot to determine the coordinates of the bounding box. Please make sure you "
        "follow the provide coordinate axes, so that vertical bounding box coordinates are "
        "between 0 and 16 and horizontal bounding box coordinates are between 0 and 9, and "
        "format the bounding box coordinates as (left, top, right, bottom). Please do not output "
        "bounding boxes with area 0. Also, please only output the bounding box and nothing else. "
        "We will provide {n} examples of design comments, followed by the corresponding UI "
        "screenshot (with a coordinate axis along its edge) and a correct bounding box for the "
        "design comment in the UI screenshot based on the coordinate axis. Please learn how to "
        "determine accurate bounding boxes for the design comment in the UI screenshot based on "
        "these examples. We will provide a final design comment and UI screenshot; please apply "
        "what you have learned from the examples to determine an accurate bounding box for this "
        "final design comment and UI screenshot only.";
    p.templates[static_cast<std::size_t>(Stage::BoxRefine)] =
        "You will be refining bounding boxes for a given UI screenshot and design comment. The "
        "bounding box will enclose a relevant region in the screenshot that is discussed in the "
        "design comment. You will be given a proposed bounding box candidate and will evaluate "
        "whether or not this bounding box accurately encloses the region in the screenshot that "
        "is discussed in the comment. The proposed bounding box coordinates, in the format of "
        "(left_coordinate, top_coordinate, right_coordinate, bottom_coordinate) and is displayed "
        "as a blue box in the screenshot patch that is also provided, with some additional "
        "margin around the blue bounding box. Please reflect on whether or not this bounding box "
        "is accurate and look closely at the UI elements contained in the blue bounding box to "
        "judge its accuracy and relevance to the design comment. If the bounding box is not "
        "accurate, please output a new bounding box that you think is accurate in the format of "
        "(left_coordinate, top_coordinate, right_coordinate, bottom_coordinate), where each "
        "coordinate is determined from the coordinate axes along the edge of the UI screenshot "
        "provided earlier. Please make sure the new bounding box you output is accurate, and "
        "refer to the coordinate axes along the edge of the zoomed-in screenshot patch and the "
        "entire screenshot (provided earlier) to determine the bounding box coordinates. If the "
        "bounding box is accurate, please output 'BOUNDING BOX IS ACCURATE, PLEASE TERMINATE'. "
        "Please only output either the updated bounding or 'BOUNDING BOX IS ACCURATE, PLEASE "
        "TERMINATE' and nothing else. We will provide {n} examples of bounding box refinements "
        "for a given design comment, UI screenshot, and bounding box candidate. Please learn how "
        "to accurately refine bounding boxes for the design comment in the UI screenshot based "
        "on these examples. We will provide a final design comment, UI screenshot, and bounding "
        "box candidate; please apply what you have learned from the examples to accurately "
        "refine the bounding box candidate for this final design comment, UI screenshot, and the "
        "zoomed in patch showing the bounding box candidate.";
    p.templates[static_cast<std::size_t>(Stage::Validation)] =
        "You are given a UI screenshot, design comment for the UI screen, and a zoomed-in patch "
        "of the UI screenshot showing the corresponding bounding box for the design comment. "
        "Please evaluate the accuracy of the design comment and bounding box with respect to the "
        "UI screenshot. The bounding box is displayed as a blue box in the zoomed-in screenshot "
        "patch, and is supposed to contain the region in the UI screen that is targeted by the "
        "design comment. Please first evaluate if the design comment is valid for the provided "
        "UI screenshot, i.e. if it correctly points out a design issue and suggests an accurate "
        "way to fix it. Please analyze the provided UI screenshot to assess the comment's "
        "validity. If the design comment is valid, please next evaluate whether the blue box in "
        "zoomed-in UI screenshot contains the region that is relevant to the design comment. If "
        "the design comment is invalid and the blue box still contains a region in the UI "
        "screenshot with design issues, please return the label 'Incorrect Comment'. If the "
        "comment is valid, but the blue box does not contain the region relevant to the comment, "
        "please return the label 'Incorrect Bbox'. If the comment is invalid and the blue box "
        "does not contain a region with design issues, please return the label 'Both Incorrect'. "
        "Finally, if the design comment is valid and the blue box correctly contains a region in "
        "the UI that is relevant to the comment, please return the label 'Both Correct'. Please "
        "only return the appropiate label and nothing else. We will give {n} examples, the UI "
        "screenshot (labeled 'UI Screenshot'), followed by the design comment (labeled 'Design "
        "Comment'), a zoomed-in screenshot patch showing the blue bounding box (labeled "
        "'Zoomed-in Patch'), and finally the correct label (labeled 'Label') for the accuracy of "
        "the UI screenshot, design comment, and corresponding bounding box. Please learn from "
        "these examples, to see how to correctly categorize the design comment and its "
        "corresponding bounding box by accuracy. Finally, we will give a UI screenshot, design "
        "comment, and a zoomed-in patch showing the corresponding blue bounding box. Please "
        "apply what you have learned from the examples to correctly classify the accuracy of the "
        "design comment and its corresponding bounding box.";
    p.templates[static_cast<std::size_t>(Stage::TextRefine)] =
        "You will be refining the design comment for a specific region in a UI screenshot. You "
        "will be given a UI screenshot, a zoomed-in patch of the screenshot with a blue box "
        "containing the region of interest, and a design comment for the UI region inside the "
        "blue box. Please evaluate whether or not the design comment accurately describes the "
        "design issue for the UI region inside the blue box. If the design comment is accurate, "
        "please output 'COMMENT IS ACCURATE, PLEASE TERMINATE'. If the design comment is not "
        "accurate, please refine the design comment to the accurate and output this accurate "
        "design comment for the region of interest, following the same format as the input "
        "design comment. We will provide {n} examples of bounding box refinements for each UI "
        "screenshot, region of interest, and design comment candidate for the region of "
        "interest. Please learn how to accurately refine the design comment for the region of "
        "interest in the UI screenshot based on these examples. We will provide a final UI "
        "screenshot, region of interest, and design comment candidate for the region of "
        "interest; please apply what you have learned from the examples to accurately refine "
        "design comment candidate for this final UI screenshot and region of interest. Please "
        "only output the refined comment or 'COMMENT IS ACCURATE, PLEASE TERMINATE' and nothing "
        "else.";
    return p;
}

// Open-vocabulary object and attribute detection. Same stage structure; the
// guidelines slot carries the category and attribute vocabularies and each
// text item is "category: attribute, attribute".
inline TaskProfile open_vocab_detection_profile(std::string vocabulary) {
    TaskProfile p;
    p.name = "open-vocab-detection";
    p.guidelines = std::move(vocabulary);
    p.templates[static_cast<std::size_t>(Stage::TextGen)] =
        "For these object categories and attributes: {guidelines}. Please find all the objects "
        "in the image provided that belong to one of these categories. For each object found, "
        "output one line of the form 'category: attribute, attribute, ...' listing its category "
        "followed by every listed attribute that applies to it. Please end each object with two "
        "newline characters (\\n\\n). Only use categories and attributes from the lists above. "
        "We will provide {n} examples of an image and a set of valid object descriptions. Please "
        "learn how to give valid object descriptions from these examples and apply this "
        "knowledge to the last image.";
    p.templates[static_cast<std::size_t>(Stage::TextFilter)] =
        "For the provided image and a list of object descriptions, please filter out the "
        "incorrect descriptions and return a list tuples. Each tuple contains its index i in the "
        "list, followed by True or False. The tuple would contain True if the description at "
        "index i in the input list correctly describes an object in the image, and False "
        "otherwise. We will give {n} examples, where each image is followed by a list of object "
        "descriptions and an output list of tuples. Please learn from these examples. Finally, "
        "we will give an image, followed by its object descriptions. Please only output the list "
        "of tuples and nothing else.";
    p.templates[static_cast<std::size_t>(Stage::BoxGen)] =
        "You will be providing bounding boxes coordinates for the provided image and object "
        "description. The bounding box will enclose the object described. You will use the "
        "coordinate axes along the edge of the image to determine the coordinates of the "
        "bounding box, and format the bounding box coordinates as (left, top, right, bottom). "
        "Please do not output bounding boxes with area 0. Also, please only output the bounding "
        "box and nothing else. We will provide {n} examples of object descriptions, followed by "
        "the corresponding image (with a coordinate axis along its edge) and a correct bounding "
        "box. We will provide a final object description and image; please determine an "
        "accurate bounding box for this final description and image only.";
    p.templates[static_cast<std::size_t>(Stage::BoxRefine)] =
        "You will be refining bounding boxes for a given image and object description. You will "
        "be given a proposed bounding box candidate, in the format of (left_coordinate, "
        "top_coordinate, right_coordinate, bottom_coordinate), displayed as a blue box in the "
        "image patch that is also provided, with some additional margin around the blue "
        "bounding box. If the bounding box is not accurate, please output a new bounding box in "
        "the same format, determined from the coordinate axes along the edges of the patch and "
        "the entire image. If the bounding box is accurate, please output 'BOUNDING BOX IS "
        "ACCURATE, PLEASE TERMINATE'. Please only output either the updated bounding box or "
        "'BOUNDING BOX IS ACCURATE, PLEASE TERMINATE' and nothing else. We will provide {n} "
        "examples of bounding box refinements.";
    p.templates[static_cast<std::size_t>(Stage::Validation)] =
        "You are given an image, an object description, and a zoomed-in patch of the image "
        "showing the corresponding bounding box as a blue box. If the description is incorrect "
        "but the blue box contains an object, please return the label 'Incorrect Comment'. If "
        "the description is correct but the blue box does not contain the described object, "
        "please return the label 'Incorrect Bbox'. If both are incorrect, please return the "
        "label 'Both Incorrect'. If the description is correct and the blue box contains the "
        "described object, please return the label 'Both Correct'. Please only return the "
        "appropriate label and nothing else. We will give {n} examples.";
    p.templates[static_cast<std::size_t>(Stage::TextRefine)] =
        "You will be refining the object description for a specific region in an image. You "
        "will be given an image, a zoomed-in patch with a blue box containing the region of "
        "interest, and an object description. If the description is accurate, please output "
        "'COMMENT IS ACCURATE, PLEASE TERMINATE'. Otherwise output a corrected description in "
        "the same 'category: attribute, attribute' format, using only the listed categories and "
        "attributes: {guidelines}. We will provide {n} examples of description refinements. "
        "Please only output the refined description or 'COMMENT IS ACCURATE, PLEASE TERMINATE' "
        "and nothing else.";
    return p;
}

inline TaskProfile profile_by_name(std::string_view name, std::string guidelines) {
    if (name == "design-critique") {
        return design_critique_profile(std::move(guidelines));
    }
    if (name == "open-vocab-detection") {
        auto vocab = parse_detection_vocabulary(guidelines);
        TaskProfile p = open_vocab_detection_profile(std::move(guidelines));
        p.vocabulary = std::move(vocab);
        return p;
    }
    throw InvalidArgument("unknown task profile \"" + std::string(name) + "\"");
}

} // namespace groundcrit
