//! Canonical conformance vectors for the frame codec.

use serde::{Deserialize, Serialize};

use super::codec::{encode, Message};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceVector {
    pub message: Message,
    pub msg_id: String,
    pub expected_hex: String,
}

fn canonical_messages() -> Vec<Message> {
    vec![
        Message::VelocityCmd { v: 1.0, w: 0.1 },
        Message::VelocityCmd { v: 0.0, w: 0.0 },
        Message::VelocityCmd { v: -1.5, w: -0.5 },
        Message::VelocityCmd { v: 32.767, w: -32.768 },
        Message::VesselCmd { angle: 0.0 },
        Message::VesselCmd { angle: (45.0f64).to_radians() },
        Message::VesselCmd { angle: (-0.01f64).to_radians() },
        Message::JointVelCmd { joint: 0, vel: 0.6, valve: 1000 },
        Message::JointVelCmd { joint: 1, vel: -0.25, valve: -417 },
        Message::JointVelCmd { joint: 3, vel: 0.0, valve: 0 },
        Message::OdomTelemetry { v: 0.75, w: -0.125 },
        Message::GnssTelemetry { lat: 36.1234567, lon: 140.0000001 },
        Message::GnssTelemetry { lat: -33.8567844, lon: -151.2152967 },
        Message::GnssAltitude { alt: 21.357 },
        Message::GnssAltitude { alt: -4.0 },
        Message::JointTelemetry { joint: 2, angle: -1.234567 },
        Message::JointTelemetry { joint: 4, angle: 0.8 },
        Message::EStop,
    ]
}

pub fn conformance_vectors() -> Vec<ConformanceVector> {
    canonical_messages()
        .into_iter()
        .map(|message| {
            let frame = encode(&message).expect("canonical vector encodes");
            ConformanceVector {
                message,
                msg_id: format!("{:#05x}", frame.id()),
                expected_hex: frame.payload_hex(),
            }
        })
        .collect()
}

/// The vector set as JSON lines, one vector per line, trailing newline.
pub fn conformance_vectors_jsonl() -> String {
    let mut out = String::new();
    for v in conformance_vectors() {
        out.push_str(&serde_json::to_string(&v).expect("vector serializes"));
        out.push('\n');
    }
    out
}
